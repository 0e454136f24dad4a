//! Running record of privacy spends under basic composition.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::PrivacyBudget;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub mechanism: String,
    pub epsilon: f64,
    pub delta: f64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub epsilon: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BudgetLedger {
    entries: Vec<LedgerEntry>,
    totals: Totals,
}

impl BudgetLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// (Σε, Σδ)
    pub fn totals(&self) -> Totals {
        self.totals
    }

    pub fn record(&mut self, mechanism: &str, budget: PrivacyBudget) -> Result<()> {
        self.record_spend(mechanism, budget.epsilon, budget.delta)
    }

    /// Like `record` but δ may be 0 (pure ε mechanisms).
    pub fn record_spend(&mut self, mechanism: &str, epsilon: f64, delta: f64) -> Result<()> {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        self.record_at(mechanism, epsilon, delta, timestamp)
    }

    pub fn record_at(&mut self, mechanism: &str, epsilon: f64, delta: f64, timestamp: u64) -> Result<()> {
        if !(epsilon > 0.0 && epsilon.is_finite()) || !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidParameter(format!("cannot record spend (epsilon {epsilon}, delta {delta})")));
        }
        self.entries.push(LedgerEntry { mechanism: mechanism.to_string(), epsilon, delta, timestamp });
        self.totals = sum_entries(&self.entries);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and checks that the stored totals match the entries.
    pub fn from_json(text: &str) -> Result<Self> {
        let ledger: BudgetLedger = serde_json::from_str(text)?;
        let sums = sum_entries(&ledger.entries);
        if sums != ledger.totals {
            return Err(Error::InvalidInput(format!(
                "ledger totals {:?} disagree with the entry sums {sums:?}",
                ledger.totals
            )));
        }
        Ok(ledger)
    }

    /// Missing file → empty ledger.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        match std::fs::read_to_string(path.as_ref()) {
            Ok(text) => Self::from_json(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(e.into()),
        }
    }

    /// Write to a sibling temp file, then rename over the target.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, self.to_json()?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Load, append one entry, save.
    pub fn append_to_file(path: impl AsRef<Path>, mechanism: &str, epsilon: f64, delta: f64) -> Result<Self> {
        let mut ledger = Self::load(path.as_ref())?;
        ledger.record_spend(mechanism, epsilon, delta)?;
        ledger.save(path)?;
        Ok(ledger)
    }
}

/// Summed in entry order, so the stored totals reproduce exactly.
fn sum_entries(entries: &[LedgerEntry]) -> Totals {
    entries.iter().fold(Totals::default(), |t, e| Totals { epsilon: t.epsilon + e.epsilon, delta: t.delta + e.delta })
}
