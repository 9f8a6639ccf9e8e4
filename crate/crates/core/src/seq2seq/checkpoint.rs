//! JSON checkpoint format for a single bank model.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Bank, BankLayout, EdModel, EdParams, ModelBank, ModelDims, ModelKind, NormStats};
use crate::error::{Error, Result};
use crate::gru::GruParams;
use crate::numkit::Mat;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: ModelKind,
    pub bank: Bank,
    pub dims: ModelDims,
    pub norm_stats: NormStats,
    /// Weight matrices by name, data in row-major order.
    pub weights: BTreeMap<String, Mat>,
}

impl Checkpoint {
    pub fn from_model(model: &EdModel) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            kind: model.kind,
            bank: model.bank,
            dims: model.dims,
            norm_stats: model.norm,
            weights: model.params.named(),
        }
    }

    pub fn into_model(mut self) -> Result<EdModel> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint format version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let mut take = |name: &str| -> Result<Mat> {
            self.weights
                .remove(name)
                .ok_or_else(|| Error::Data(format!("checkpoint is missing weight '{name}'")))
        };
        let mut gru = |prefix: &str| -> Result<GruParams> {
            Ok(GruParams {
                Wz: take(&format!("{prefix}.Wz"))?,
                Wr: take(&format!("{prefix}.Wr"))?,
                W: take(&format!("{prefix}.W"))?,
                Uz: take(&format!("{prefix}.Uz"))?,
                Ur: take(&format!("{prefix}.Ur"))?,
                U: take(&format!("{prefix}.U"))?,
            })
        };
        let encoder = gru("encoder")?;
        let dec_fwd = gru("dec_fwd")?;
        let dec_bwd = match self.kind {
            ModelKind::Edu => None,
            ModelKind::Edb => Some(gru("dec_bwd")?),
        };
        let params = EdParams {
            encoder,
            embed: super::Dense {
                w: take("embed.w")?,
                b: take("embed.b")?,
            },
            dec_fwd,
            dec_bwd,
            out: super::Dense {
                w: take("out.w")?,
                b: take("out.b")?,
            },
        };
        if let Some(extra) = self.weights.keys().next() {
            return Err(Error::Data(format!("checkpoint has unexpected weight '{extra}'")));
        }
        for (name, m) in params.names().iter().zip(params.mats()) {
            if m.data.len() != m.rows * m.cols || !m.all_finite() {
                return Err(Error::Data(format!("weight '{name}' is malformed or non-finite")));
            }
        }
        let model = EdModel {
            kind: self.kind,
            bank: self.bank,
            dims: self.dims,
            params,
            norm: self.norm_stats,
        };
        model.validate()?;
        Ok(model)
    }
}

pub fn checkpoint_file_name(kind: ModelKind, bank: Bank) -> String {
    format!("{kind}_bank_{}.json", bank.label())
}

pub fn save_model(model: &EdModel, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&Checkpoint::from_model(model))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<EdModel> {
    let text = fs::read_to_string(path)?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    ck.into_model()
}

/// Writes one checkpoint per model into `dir`, returning the paths.
pub fn save_bank(bank: &ModelBank, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    bank.models
        .iter()
        .map(|m| {
            let path = dir.join(checkpoint_file_name(m.kind, m.bank));
            save_model(m, &path)?;
            Ok(path)
        })
        .collect()
}

/// Loads every bank of `layout` for `kind`; a missing file is an error naming the bank.
pub fn load_bank(dir: &Path, kind: ModelKind, layout: &BankLayout) -> Result<ModelBank> {
    let mut models = Vec::with_capacity(layout.banks.len());
    for &bank in &layout.banks {
        let path = dir.join(checkpoint_file_name(kind, bank));
        if !path.exists() {
            return Err(Error::Data(format!(
                "missing {kind} checkpoint for bank {} (expected {})",
                bank.label(),
                path.display()
            )));
        }
        let model = load_model(&path)?;
        if model.kind != kind || model.bank != bank {
            return Err(Error::Data(format!(
                "{} holds a {} model for bank {}",
                path.display(),
                model.kind,
                model.bank.label()
            )));
        }
        models.push(model);
    }
    ModelBank::new(kind, layout.clone(), models)
}
