use serde::{Deserialize, Serialize};

use super::{DomainDescriptor, SignMode};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    Agent(usize),
    Shared,
}

/// Scalar reward field over a domain, with per-episode visit decay.
///
/// Reads through [`RewardField::effective`] return `values[cell] *
/// visit_decay[cell]`; the multiplier starts at 1 and is scaled by the
/// field's retention factor on every [`RewardField::apply_decay`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardField {
    pub domain: DomainDescriptor,
    pub owner: Owner,
    values: Vec<f64>,
    pub normalized_for: Option<usize>,
    pub sign_mode: Option<SignMode>,
    decay: f64,
    visit_decay: Vec<f64>,
}

impl RewardField {
    pub fn from_values(
        domain: DomainDescriptor,
        owner: Owner,
        values: Vec<f64>,
        decay: f64,
    ) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::DomainMismatch(format!(
                "{} values for a domain of {} cells",
                values.len(),
                domain.len()
            )));
        }
        if !(0.0..=1.0).contains(&decay) {
            return Err(Error::InvalidInput(format!("decay {decay} outside [0, 1]")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite field value".into()));
        }
        let n = values.len();
        Ok(RewardField {
            domain,
            owner,
            values,
            normalized_for: None,
            sign_mode: None,
            decay,
            visit_decay: vec![1.0; n],
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn set_decay(&mut self, decay: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&decay) {
            return Err(Error::InvalidInput(format!("decay {decay} outside [0, 1]")));
        }
        self.decay = decay;
        Ok(())
    }

    /// Raw stored value, ignoring decay.
    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn visit_decay(&self, cell: usize) -> f64 {
        self.visit_decay[cell]
    }

    pub fn effective(&self, cell: usize) -> Result<f64> {
        self.check_cell(cell)?;
        Ok(self.values[cell] * self.visit_decay[cell])
    }

    pub fn apply_decay(&mut self, cell: usize) -> Result<()> {
        self.check_cell(cell)?;
        self.visit_decay[cell] *= self.decay;
        Ok(())
    }

    /// Restores every retention multiplier to 1 (start of an episode).
    pub fn reset_decay(&mut self) {
        self.visit_decay.iter_mut().for_each(|m| *m = 1.0);
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn check_cell(&self, cell: usize) -> Result<()> {
        if cell >= self.values.len() {
            return Err(Error::DomainMismatch(format!(
                "cell {cell} outside domain of {} cells",
                self.values.len()
            )));
        }
        Ok(())
    }
}

/// Scales a field so it adds at most `1/n_agents` in total.
///
/// AllPositive shifts negative fields up by `-min` first, then divides by
/// `sum * n_agents`. ZeroMean does the same and subtracts the mean.
pub fn normalize_field(
    field: &RewardField,
    n_agents: usize,
    sign_mode: SignMode,
) -> Result<RewardField> {
    if n_agents == 0 {
        return Err(Error::InvalidInput("n_agents must be positive".into()));
    }
    let min = field.min();
    let shift = if min < 0.0 { -min } else { 0.0 };
    let total: f64 = field.values.iter().map(|v| v + shift).sum();
    if total == 0.0 || !total.is_finite() {
        return Err(Error::DegenerateField(format!(
            "field sums to {total} after shifting"
        )));
    }
    let denom = total * n_agents as f64;
    let mut values: Vec<f64> = field.values.iter().map(|v| (v + shift) / denom).collect();
    if sign_mode == SignMode::ZeroMean {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        values.iter_mut().for_each(|v| *v -= mean);
    }
    Ok(RewardField {
        domain: field.domain.clone(),
        owner: field.owner,
        visit_decay: vec![1.0; values.len()],
        values,
        normalized_for: Some(n_agents),
        sign_mode: Some(sign_mode),
        decay: field.decay,
    })
}

/// Element-wise sum of same-owner fields, renormalized.
///
/// The merged field keeps the smallest retention factor among its inputs.
pub fn superimpose(
    fields: &[RewardField],
    n_agents: usize,
    sign_mode: SignMode,
) -> Result<RewardField> {
    let first = fields
        .first()
        .ok_or_else(|| Error::InvalidInput("nothing to superimpose".into()))?;
    let mut values = vec![0.0; first.len()];
    let mut decay = first.decay;
    for f in fields {
        if f.domain != first.domain || f.owner != first.owner {
            return Err(Error::DomainMismatch(format!(
                "cannot superimpose {:?}/{:?} onto {:?}/{:?}",
                f.owner, f.domain, first.owner, first.domain
            )));
        }
        for (acc, v) in values.iter_mut().zip(&f.values) {
            *acc += v;
        }
        decay = decay.min(f.decay);
    }
    let merged = RewardField::from_values(first.domain.clone(), first.owner, values, decay)?;
    normalize_field(&merged, n_agents, sign_mode)
}
