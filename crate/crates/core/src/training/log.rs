use std::path::Path;

use crate::error::{Error, Result};

/// Summary of one training epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean data loss over the batches actually trained on (adversarial ones
    /// included), without the weight penalty.
    pub loss: f64,
    pub clean_acc: f64,
    pub l1_norm: f64,
    pub l2_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub steps: u64,
    /// Largest relative gap between the FGSM batch loss and the clean loss
    /// at margins shifted by `eps * ||w||_1`, when that check applies.
    pub translation_residual: Option<f64>,
}

const HEADER: [&str; 5] = ["epoch", "loss", "clean_acc", "l1_norm", "l2_norm"];

impl TrainingLog {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER)?;
        for r in &self.epochs {
            w.write_record([
                r.epoch.to_string(),
                r.loss.to_string(),
                r.clean_acc.to_string(),
                r.l1_norm.to_string(),
                r.l2_norm.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::arg(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    /// Parse the epoch rows written by [`TrainingLog::to_csv`]; `#` lines
    /// are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        if r.headers()?.iter().collect::<Vec<_>>() != HEADER {
            return Err(Error::arg("training log header mismatch"));
        }
        let mut epochs = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| Error::arg(format!("bad number `{}`", &rec[i])))
            };
            epochs.push(EpochRecord {
                epoch: rec[0].parse().map_err(|_| Error::arg("bad epoch"))?,
                loss: f(1)?,
                clean_acc: f(2)?,
                l1_norm: f(3)?,
                l2_norm: f(4)?,
            });
        }
        Ok(Self {
            epochs,
            ..Self::default()
        })
    }
}
