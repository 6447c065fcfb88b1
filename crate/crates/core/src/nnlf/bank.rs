use std::collections::BTreeMap;
use std::path::Path;

use super::model::{load_weights, save_weights, ModelKind, ModelWeights};
use crate::error::{Error, Result};
use crate::transform::Qp;

/// Inclusive QP ranges the three model sets were trained for.
pub const QP_BANDS: [(i32, i32); 3] = [(22, 29), (30, 36), (37, 42)];

/// Band whose range holds `qp`; QPs outside every range take the nearest.
pub fn qp_band(qp: Qp) -> usize {
    QP_BANDS
        .iter()
        .position(|&(_, hi)| qp.value() <= hi)
        .unwrap_or(QP_BANDS.len() - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub band: u8,
    pub model: ModelWeights,
    pub sha256: [u8; 32],
}

/// Filter models by kind and QP band.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelBank {
    entries: BTreeMap<(ModelKind, u8), BankEntry>,
}

impl ModelBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, band: u8, model: ModelWeights) -> Result<()> {
        model.validate()?;
        let sha256 = model.sha256();
        self.entries
            .insert((model.kind, band), BankEntry { band, model, sha256 });
        Ok(())
    }

    pub fn get(&self, kind: ModelKind, band: u8) -> Option<&BankEntry> {
        self.entries.get(&(kind, band))
    }

    /// Models of one kind ordered by band; the position is the index the
    /// bitstream signals.
    pub fn candidates(&self, kind: ModelKind) -> Vec<&BankEntry> {
        self.entries
            .range((kind, 0)..=(kind, u8::MAX))
            .map(|(_, e)| e)
            .collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = &BankEntry> {
        self.entries.values()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn find_hash(&self, sha256: &[u8; 32]) -> Option<&BankEntry> {
        self.entries.values().find(|e| &e.sha256 == sha256)
    }

    pub fn file_name(kind: ModelKind, band: u8) -> String {
        format!("{}-band{band}.nnlf", kind.name())
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        std::fs::create_dir_all(dir.as_ref())?;
        for e in self.entries.values() {
            save_weights(&e.model, dir.as_ref().join(Self::file_name(e.model.kind, e.band)))?;
        }
        Ok(())
    }

    /// Loads every `<kind>-band<n>.nnlf` file in `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let mut bank = ModelBank::new();
        let mut names: Vec<_> = std::fs::read_dir(dir.as_ref())?
            .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
            .collect::<std::io::Result<_>>()?;
        names.sort();
        for name in names {
            let Some(stem) = name.strip_suffix(".nnlf") else {
                continue;
            };
            let parsed = stem.rsplit_once("-band").and_then(|(kind, band)| {
                let kind = ModelKind::ALL.into_iter().find(|k| k.name() == kind)?;
                Some((kind, band.parse::<u8>().ok()?))
            });
            let Some((kind, band)) = parsed else {
                continue;
            };
            let model = load_weights(dir.as_ref().join(&name))?;
            if model.kind != kind {
                return Err(Error::MalformedWeights(format!(
                    "{name} holds a {} model",
                    model.kind.name()
                )));
            }
            bank.insert(band, model)?;
        }
        Ok(bank)
    }
}
