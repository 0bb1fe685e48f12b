use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One attribute observed per alternative, e.g. travel time.
///
/// `columns[i]` names the column holding this attribute for alternative `i`;
/// `None` marks a structural zero (the alternative has no such attribute).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    pub name: String,
    pub columns: Vec<Option<String>>,
}

/// Binds delimited-file columns to alternatives and feature slots.
///
/// Each alternative's feature vector is its attribute slots, in
/// `alternative_attributes` order, followed by the individual attributes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSchema {
    pub alternatives: Vec<String>,
    pub choice_column: String,
    /// Extra spellings of choice values; alternative names and indices are always accepted.
    #[serde(default)]
    pub choice_labels: BTreeMap<String, usize>,
    pub alternative_attributes: Vec<AttributeSpec>,
    #[serde(default)]
    pub individual_attributes: Vec<String>,
}

/// An alternative-specific attribute that can be swept in analyses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variable {
    /// Display name, `"<alternative> <attribute>"`.
    pub name: String,
    pub alternative: usize,
    pub slot: usize,
    pub column: String,
}

impl FeatureSchema {
    /// Four travel modes with time and cost per mode and four traveller
    /// attributes; bike and walking have no cost column.
    pub fn travel_mode_default() -> Self {
        let s = |x: &str| Some(x.to_string());
        Self {
            alternatives: ["automobile", "transit", "bike", "walking"]
                .map(String::from)
                .to_vec(),
            choice_column: "mode".into(),
            choice_labels: [("drive", 0), ("pt", 1), ("cycle", 2), ("walk", 3)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            alternative_attributes: vec![
                AttributeSpec {
                    name: "time".into(),
                    columns: vec![s("driving_time"), s("transit_time"), s("biking_time"), s("walking_time")],
                },
                AttributeSpec {
                    name: "cost".into(),
                    columns: vec![s("driving_cost"), s("transit_cost"), None, None],
                },
            ],
            individual_attributes: ["age", "male", "vehicles", "household_size"]
                .map(String::from)
                .to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.alternatives.len();
        if n == 0 {
            return Err(Error::config("schema lists no alternatives"));
        }
        for a in &self.alternative_attributes {
            if a.columns.len() != n {
                return Err(Error::config(format!(
                    "attribute `{}` lists {} columns for {n} alternatives",
                    a.name,
                    a.columns.len()
                )));
            }
        }
        if self.feature_dim() == 0 {
            return Err(Error::config("schema defines no feature columns"));
        }
        if let Some((label, &i)) = self.choice_labels.iter().find(|(_, &i)| i >= n) {
            return Err(Error::config(format!(
                "choice label `{label}` maps to alternative {i}, but only {n} exist"
            )));
        }
        let cols = self.columns();
        for (i, c) in cols.iter().enumerate() {
            if cols[..i].contains(c) {
                return Err(Error::config(format!("column `{c}` bound twice")));
            }
        }
        Ok(())
    }

    pub fn num_alternatives(&self) -> usize {
        self.alternatives.len()
    }

    /// Per-alternative feature dimension.
    pub fn feature_dim(&self) -> usize {
        self.alternative_attributes.len() + self.individual_attributes.len()
    }

    /// Numeric columns in storage order: attribute columns alternative-major,
    /// then individual columns.
    pub fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = self.variables().into_iter().map(|v| v.column).collect();
        cols.extend(self.individual_attributes.iter().cloned());
        cols
    }

    /// Alternative-specific variables, alternative-major then attribute order.
    pub fn variables(&self) -> Vec<Variable> {
        let mut out = Vec::new();
        for (i, alt) in self.alternatives.iter().enumerate() {
            for (slot, attr) in self.alternative_attributes.iter().enumerate() {
                if let Some(col) = &attr.columns[i] {
                    out.push(Variable {
                        name: format!("{alt} {}", attr.name),
                        alternative: i,
                        slot,
                        column: col.clone(),
                    });
                }
            }
        }
        out
    }

    /// Looks a variable up by display name or column name.
    pub fn variable(&self, name: &str) -> Result<Variable> {
        self.variables()
            .into_iter()
            .find(|v| v.name == name || v.column == name)
            .ok_or_else(|| {
                Error::usage(format!(
                    "`{name}` is not an alternative-specific variable of the schema"
                ))
            })
    }

    /// Parses a choice cell: an index, an alternative name, or a configured label.
    pub fn parse_choice(&self, raw: &str) -> Option<usize> {
        let raw = raw.trim();
        if let Ok(i) = raw.parse::<usize>() {
            return (i < self.alternatives.len()).then_some(i);
        }
        if let Some(i) = self.alternatives.iter().position(|a| a == raw) {
            return Some(i);
        }
        self.choice_labels.get(raw).copied()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        hex_digest(&json)
    }
}

/// First 16 bytes of the SHA-256 digest, hex encoded.
pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .take(16)
        .map(|b| format!("{b:02x}"))
        .collect()
}
