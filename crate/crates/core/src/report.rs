//! Serializable result records shared by the verifiers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::path::{Path, TimeGrid};

/// A named path attached to a report; written out as a CSV next to the JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    pub csv_ref: Option<String>,
    #[serde(skip)]
    pub path: Option<Path>,
}

impl Component {
    pub fn new(name: impl Into<String>, path: Path) -> Self {
        Self {
            name: name.into(),
            csv_ref: None,
            path: Some(path),
        }
    }
}

/// Residual statistics of a pathwise identity `lhs - rhs = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity_name: String,
    pub grid: TimeGrid,
    pub sup_residual: f64,
    pub l2_residual: f64,
    pub pass: bool,
    pub tolerance: f64,
    pub components: Vec<Component>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub statistics: BTreeMap<String, f64>,
}

impl IdentityReport {
    /// Sup and time-L² norms of `residual`; passes when the sup is within `tolerance`.
    pub fn from_residual(name: impl Into<String>, residual: &Path, tolerance: f64) -> Self {
        let sup = residual.sup_abs();
        let l2 = (residual.dt() * residual.values().iter().map(|r| r * r).sum::<f64>()).sqrt();
        Self {
            identity_name: name.into(),
            grid: *residual.grid(),
            sup_residual: sup,
            l2_residual: l2,
            pass: sup <= tolerance,
            tolerance,
            components: vec![Component::new("residual", residual.clone())],
            statistics: BTreeMap::new(),
        }
    }

    pub fn with_component(mut self, name: impl Into<String>, path: Path) -> Self {
        self.components.push(Component::new(name, path));
        self
    }

    pub fn with_statistic(mut self, name: impl Into<String>, value: f64) -> Self {
        self.statistics.insert(name.into(), value);
        self
    }

    pub fn component(&self, name: &str) -> Option<&Path> {
        self.components
            .iter()
            .find(|c| c.name == name)
            .and_then(|c| c.path.as_ref())
    }
}

/// Hex SHA-256 of a serializable value's canonical JSON.
///
/// `serde_json` writes struct fields in declaration order and `BTreeMap`s in
/// key order, so equal values hash equally.
pub fn content_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("report values serialize");
    hex::encode(Sha256::digest(&bytes))
}
