use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::inputs::PreparedQuery;
use super::{Bank, BankLayout, EdModel, ModelBank, ModelKind, NormStats};
use crate::dataprep::TrainingExample;
use crate::error::{Error, Result};
use crate::numkit::{AdamConfig, AdamState, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub early_stopping: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 32,
            max_epochs: 40,
            patience: 5,
            early_stopping: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Usage("batch_size must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Usage("max_epochs must be >= 1".into()));
        }
        if !(self.adam.lr > 0.0) || !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) || self.adam.eps < 0.0
        {
            return Err(Error::Usage(format!("invalid Adam settings {:?}", self.adam)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub history: Vec<EpochLoss>,
    /// Epoch whose weights were kept (1-based).
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub n_train: usize,
    pub n_val: usize,
}

struct Prepared {
    query: PreparedQuery,
    targets: Vec<f64>,
}

fn prepare(model: &EdModel, examples: &[&TrainingExample]) -> Result<Vec<Prepared>> {
    examples
        .iter()
        .map(|ex| {
            if !model.bank.contains(ex.inputs.m) {
                return Err(Error::Usage(format!("example at m={} outside bank {}", ex.inputs.m, model.bank)));
            }
            if ex.inputs.enc_seq.len() != ex.inputs.m || ex.inputs.dec_seq.is_empty() {
                return Err(Error::Data(format!("malformed example for trip {}", ex.provenance.trip_id)));
            }
            Ok(Prepared {
                query: PreparedQuery::new(&ex.inputs, &model.norm),
                targets: model.normalized_targets(ex)?,
            })
        })
        .collect()
}

fn mean_loss(model: &EdModel, set: &[Prepared]) -> f64 {
    let total: f64 = set
        .iter()
        .map(|p| {
            let out = model.forward_prepared(&p.query).outputs;
            out.iter().zip(&p.targets).map(|(y, t)| (y - t) * (y - t)).sum::<f64>() / p.targets.len() as f64
        })
        .sum();
    total / set.len() as f64
}

/// Minibatch Adam with optional early stopping on `val`.
///
/// When early stopping is active the weights of the best validation epoch are
/// restored before returning.
pub fn train_model(
    model: &mut EdModel,
    train: &[&TrainingExample],
    val: &[&TrainingExample],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data(format!("no training examples for bank {}", model.bank)));
    }
    let train_set = prepare(model, train)?;
    let val_set = prepare(model, val)?;
    let use_val = cfg.early_stopping && !val_set.is_empty();

    let mut adam = AdamState::new(cfg.adam, model.params.mats());
    let mut grads = model.params.zeros_like();
    let rng = Rng::new(seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, super::EdParams)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        rng.derive(&[epoch as u64]).shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.fill(0.0);
            for &i in batch {
                let p = &train_set[i];
                epoch_loss += model.accumulate_example_grad(&p.query, &p.targets, &mut grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            let g = grads.mats();
            let mut params = model.params.mats_mut();
            adam.step(&mut params, &g)?;
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        if !train_loss.is_finite() || !model.params.all_finite() {
            return Err(Error::Numeric(format!("training diverged at epoch {epoch} in bank {}", model.bank)));
        }
        let val_loss = use_val.then(|| mean_loss(model, &val_set));
        log::debug!(
            "{} bank {} epoch {epoch}: train {train_loss:.5} val {val_loss:?}",
            model.kind,
            model.bank.label()
        );
        history.push(EpochLoss {
            epoch,
            train_loss,
            val_loss,
        });

        if let Some(v) = val_loss {
            let improved = best.as_ref().is_none_or(|(b, _, _)| v < *b);
            if improved {
                best = Some((v, epoch, model.params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let best_epoch = match best {
        Some((_, epoch, params)) => {
            model.params = params;
            epoch
        }
        None => history.len(),
    };
    Ok(TrainReport {
        history,
        best_epoch,
        stopped_early,
        n_train: train_set.len(),
        n_val: val_set.len(),
    })
}

/// Architecture settings shared by every model of a bank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankSpec {
    pub kind: ModelKind,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub norm: NormStats,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum BankOutcome {
    Trained { bank: Bank, report: TrainReport },
    Skipped { bank: Bank, reason: String },
}

impl fmt::Display for BankOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BankOutcome::Trained { bank, report } => {
                let last = report.history.get(report.best_epoch.wrapping_sub(1));
                write!(
                    f,
                    "bank {bank}: trained on {} examples, kept epoch {}/{}",
                    report.n_train,
                    report.best_epoch,
                    report.history.len()
                )?;
                if let Some(l) = last {
                    write!(f, ", train loss {:.4}", l.train_loss)?;
                    if let Some(v) = l.val_loss {
                        write!(f, ", val loss {v:.4}")?;
                    }
                }
                Ok(())
            }
            BankOutcome::Skipped { bank, reason } => write!(f, "bank {bank}: skipped ({reason})"),
        }
    }
}

/// Trains one model per bank on the examples whose `m` falls in that bank.
///
/// `is_validation` selects the held-out examples used for early stopping.
/// Banks with no training examples are skipped and reported, not fatal.
pub fn train_bank<F>(
    spec: &BankSpec,
    layout: &BankLayout,
    examples: &[TrainingExample],
    cfg: &TrainConfig,
    is_validation: F,
) -> Result<(ModelBank, Vec<BankOutcome>)>
where
    F: Fn(&TrainingExample) -> bool + Sync,
{
    cfg.validate()?;
    let root = Rng::new(spec.seed);
    let kind_tag = match spec.kind {
        ModelKind::Edu => 1u64,
        ModelKind::Edb => 2u64,
    };
    let results: Vec<Result<(Option<EdModel>, BankOutcome)>> = layout
        .banks
        .par_iter()
        .map(|&bank| {
            let (val, train): (Vec<&TrainingExample>, Vec<&TrainingExample>) = examples
                .iter()
                .filter(|e| bank.contains(e.inputs.m))
                .partition(|e| is_validation(e));
            if train.is_empty() {
                return Ok((
                    None,
                    BankOutcome::Skipped {
                        bank,
                        reason: "no training examples".into(),
                    },
                ));
            }
            let mut init = root.derive(&[kind_tag, bank.lo as u64, 0]);
            let mut model = EdModel::new(spec.kind, bank, spec.enc_hidden, spec.dec_hidden, spec.norm, &mut init);
            let shuffle_seed = root.derive(&[kind_tag, bank.lo as u64, 1]).seed();
            let report = train_model(&mut model, &train, &val, cfg, shuffle_seed)?;
            Ok((Some(model), BankOutcome::Trained { bank, report }))
        })
        .collect();
    let mut models = Vec::new();
    let mut outcomes = Vec::new();
    for r in results {
        let (model, outcome) = r?;
        models.extend(model);
        outcomes.push(outcome);
    }
    Ok((ModelBank::new(spec.kind, layout.clone(), models)?, outcomes))
}
